#pragma once

#include "manifold_track/errors.hpp"
#include "manifold_track/so3.hpp"
#include "manifold_track/kinematics.hpp"
#include "manifold_track/sensors.hpp"
#include "manifold_track/filters.hpp"
#include "manifold_track/scenarios.hpp"
#include "manifold_track/metrics.hpp"
#include "manifold_track/experiment.hpp"
#include "manifold_track/cli.hpp"
