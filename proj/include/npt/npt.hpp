#pragma once

#include "npt/core.hpp"
#include "npt/geometry.hpp"
#include "npt/metrics.hpp"
#include "npt/model.hpp"
#include "npt/losses.hpp"
#include "npt/data.hpp"
#include "npt/train.hpp"
#include "npt/io.hpp"
#include "npt/experiment.hpp"
#include "npt/plot.hpp"
