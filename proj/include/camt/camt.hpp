#pragma once

// Covariate-adaptive family-wise error rate control.

#include "camt/numeric.hpp"
#include "camt/random.hpp"
#include "camt/model.hpp"
#include "camt/estimation.hpp"
#include "camt/decision.hpp"
#include "camt/baselines.hpp"
#include "camt/pipeline.hpp"
#include "camt/simulation.hpp"
#include "camt/evaluation.hpp"
#include "camt/io.hpp"
