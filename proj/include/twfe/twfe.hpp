#pragma once

#include "twfe/correction.hpp"
#include "twfe/diagnostics.hpp"
#include "twfe/distributions.hpp"
#include "twfe/error.hpp"
#include "twfe/infeasible.hpp"
#include "twfe/inference.hpp"
#include "twfe/io.hpp"
#include "twfe/model.hpp"
#include "twfe/numdiff.hpp"
#include "twfe/objective.hpp"
#include "twfe/panel.hpp"
#include "twfe/profiler.hpp"
#include "twfe/simulation.hpp"
