#pragma once

#include "geoloc/atomic_file.hpp"
#include "geoloc/error.hpp"
#include "geoloc/evaluation.hpp"
#include "geoloc/geometry.hpp"
#include "geoloc/grad_check.hpp"
#include "geoloc/hungarian.hpp"
#include "geoloc/losses.hpp"
#include "geoloc/matcher_model.hpp"
#include "geoloc/matching.hpp"
#include "geoloc/mlp.hpp"
#include "geoloc/mot_format.hpp"
#include "geoloc/plot.hpp"
#include "geoloc/scene.hpp"
#include "geoloc/scene_io.hpp"
#include "geoloc/simulator.hpp"
#include "geoloc/tensor.hpp"
#include "geoloc/tracker.hpp"
