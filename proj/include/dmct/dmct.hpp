#pragma once

#include "dmct/appearance.hpp"
#include "dmct/detect.hpp"
#include "dmct/error.hpp"
#include "dmct/flow.hpp"
#include "dmct/fusion.hpp"
#include "dmct/geometry.hpp"
#include "dmct/glimpse.hpp"
#include "dmct/heatmap.hpp"
#include "dmct/metrics.hpp"
#include "dmct/occupancy_map.hpp"
#include "dmct/pipeline.hpp"
#include "dmct/proposal.hpp"
#include "dmct/sim.hpp"
#include "dmct/tracker.hpp"
