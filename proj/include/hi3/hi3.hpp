#pragma once

#include "hi3/stats.hpp"
#include "hi3/params.hpp"
#include "hi3/prior.hpp"
#include "hi3/decision.hpp"
#include "hi3/rng.hpp"
#include "hi3/calibration.hpp"
#include "hi3/mtd.hpp"
#include "hi3/simulate.hpp"
#include "hi3/io.hpp"
