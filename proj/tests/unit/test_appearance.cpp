#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace dmct;

TEST(Cuboid, OverheadBoxIsCenteredSquare) {
  const auto cam = testing_support::overhead_camera(Vec2(1, 2), 6.0, 400.0, {641, 481});
  const auto box = project_cuboid(PersonCuboid{Vec2(1, 2)}, cam);
  ASSERT_TRUE(box);
  EXPECT_NEAR((box->x0 + box->x1) / 2.0, 320.0, 1.0);
  EXPECT_NEAR((box->y0 + box->y1) / 2.0, 240.0, 1.0);
  EXPECT_NEAR(box->x1 - box->x0, box->y1 - box->y0, 2);
}

TEST(Cuboid, BehindCameraIsOutOfView) {
  const auto cam = CameraCalibration::look_at(Vec3(0, 0, 2), Vec3(0, 5, 0), 400, {640, 480});
  EXPECT_FALSE(project_cuboid(PersonCuboid{Vec2(0, -5)}, cam));
}

TEST(Cuboid, BoxContainsProjectedBase) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-3, 3);
  int seen = 0;
  for (int i = 0; i < 200; ++i) {
    const auto cam = testing_support::random_camera(rng);
    const Vec2 g(u(rng), u(rng));
    const auto box = project_cuboid(PersonCuboid{g}, cam);
    const auto base = cam.project(Vec3(g.x(), g.y(), 0));
    if (!box || !base) continue;
    const auto s = cam.image_size();
    if (base->x() < 0 || base->y() < 0 || base->x() > s.width - 1 || base->y() > s.height - 1) continue;
    EXPECT_TRUE(box->contains(*base));
    ++seen;
  }
  EXPECT_GT(seen, 50);
}

TEST(Histogram, UniformRed) {
  const RgbImage img(10, 10, Rgb{255, 0, 0});
  const auto h = histogram(img, ImageBox{0, 0, 9, 9}, 8);
  EXPECT_FALSE(h.empty);
  EXPECT_DOUBLE_EQ(h.mass[h.index(Rgb{255, 0, 0})], 1.0);
  EXPECT_DOUBLE_EQ(std::accumulate(h.mass.begin(), h.mass.end(), 0.0), 1.0);
}

TEST(Histogram, HalfRedHalfBlue) {
  RgbImage img(10, 4, Rgb{255, 0, 0});
  for (int y = 0; y < 4; ++y)
    for (int x = 5; x < 10; ++x) img(x, y) = Rgb{0, 0, 255};
  const auto h = histogram(img, ImageBox{0, 0, 9, 3});
  EXPECT_DOUBLE_EQ(h.mass[h.index(Rgb{255, 0, 0})], 0.5);
  EXPECT_DOUBLE_EQ(h.mass[h.index(Rgb{0, 0, 255})], 0.5);
}

TEST(Histogram, PermutationInvariant) {
  std::mt19937_64 rng(62);
  std::uniform_int_distribution<int> byte(0, 255);
  RgbImage img(16, 16);
  for (auto& p : img.pixels) p = Rgb{static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
                                     static_cast<std::uint8_t>(byte(rng))};
  RgbImage shuffled = img;
  std::shuffle(shuffled.pixels.begin(), shuffled.pixels.end(), rng);
  const ImageBox all{0, 0, 15, 15};
  EXPECT_EQ(histogram(img, all).mass, histogram(shuffled, all).mass);
  EXPECT_THROW(histogram(img, all, 1), ConfigError);
  EXPECT_TRUE(histogram(img, ImageBox{}).empty);
}

TEST(Similarity, Properties) {
  const RgbImage red(4, 4, Rgb{250, 10, 10}), blue(4, 4, Rgb{10, 10, 250});
  RgbImage mixed = red;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 4; ++y) mixed(x, y) = Rgb{10, 10, 250};
  const ImageBox all{0, 0, 3, 3};
  const auto hr = histogram(red, all), hb = histogram(blue, all), hm = histogram(mixed, all);
  EXPECT_DOUBLE_EQ(similarity(hr, hr), 1.0);
  EXPECT_DOUBLE_EQ(similarity(hr, hb), 0.0);
  EXPECT_DOUBLE_EQ(similarity(hr, hm), 0.5);
  EXPECT_DOUBLE_EQ(similarity(hm, hr), similarity(hr, hm));
  EXPECT_THROW(similarity(hr, histogram(red, all, 4)), ConfigError);
}

TEST(Similarity, RandomHistogramsStayInRangeAndSymmetric) {
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    ColorHistogram a, b;
    a.bins = b.bins = 2;
    a.mass.resize(8);
    b.mass.resize(8);
    for (auto* h : {&a, &b}) {
      for (auto& m : h->mass) m = u(rng);
      const double s = std::accumulate(h->mass.begin(), h->mass.end(), 0.0);
      for (auto& m : h->mass) m /= s;
      h->empty = false;
    }
    const double s = similarity(a, b);
    EXPECT_GE(s, 0.0);
    EXPECT_LT(s, 1.0);
    EXPECT_DOUBLE_EQ(s, similarity(b, a));
  }
}

TEST(PersonHistogram, AccumulatesAcrossViews) {
  const auto cam = testing_support::overhead_camera(Vec2(0, 0), 6.0, 200.0, {200, 200});
  const std::vector<CameraCalibration> cams{cam, cam};
  const std::vector<RgbImage> frames{RgbImage(200, 200, Rgb{255, 0, 0}), RgbImage(200, 200, Rgb{0, 255, 0})};
  const auto h = person_histogram(Vec2(0, 0), cams, frames);
  EXPECT_DOUBLE_EQ(h.mass[h.index(Rgb{255, 0, 0})], 0.5);
  EXPECT_DOUBLE_EQ(h.mass[h.index(Rgb{0, 255, 0})], 0.5);
  EXPECT_THROW(person_histogram(Vec2(0, 0), cams, std::vector<RgbImage>{}), ConfigError);
}

TEST(Ppm, RoundTrip) {
  RgbImage img(3, 2, Rgb{1, 2, 3});
  img(2, 1) = Rgb{200, 100, 50};
  const auto dir = testing_support::temp_dir("ppm");
  write_ppm(img, dir / "a.ppm");
  EXPECT_EQ(read_ppm(dir / "a.ppm"), img);
  EXPECT_THROW(read_ppm(dir / "none.ppm"), DataError);
}
