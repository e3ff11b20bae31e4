#pragma once

#include "nmq/errors.hpp"
#include "nmq/qmodel.hpp"
#include "nmq/ionmodel.hpp"
#include "nmq/metrics.hpp"
#include "nmq/noise.hpp"
#include "nmq/regularize.hpp"
