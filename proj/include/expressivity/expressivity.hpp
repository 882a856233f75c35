#pragma once

#include "expressivity/data_model.hpp"
#include "expressivity/errors.hpp"
#include "expressivity/ingest.hpp"
#include "expressivity/mine.hpp"
#include "expressivity/numeric.hpp"
#include "expressivity/oracles.hpp"
#include "expressivity/report.hpp"
#include "expressivity/rng.hpp"
#include "expressivity/statnet.hpp"
#include "expressivity/sweep.hpp"
#include "expressivity/synthgen.hpp"
#include "expressivity/validate.hpp"
