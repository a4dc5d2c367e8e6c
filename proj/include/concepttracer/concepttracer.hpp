#pragma once

// Umbrella header for the analysis library (everything except the HTTP server).

#include "data_io.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "pareto.hpp"
#include "pipeline.hpp"
#include "report.hpp"
#include "result.hpp"
#include "rng.hpp"
#include "significance.hpp"
#include "types.hpp"
#include "version.hpp"
#include "view.hpp"
