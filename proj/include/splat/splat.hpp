#pragma once

#include "splat/core.hpp"
#include "splat/projection.hpp"
#include "splat/binning.hpp"
#include "splat/raster_forward.hpp"
#include "splat/raster_backward.hpp"
#include "splat/proj_backward.hpp"
#include "splat/loss.hpp"
#include "splat/random_scene.hpp"
#include "splat/gradcheck.hpp"
#include "splat/optimize.hpp"
#include "splat/io.hpp"
