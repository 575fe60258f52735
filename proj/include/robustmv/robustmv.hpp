#pragma once

#include "robustmv/errors.hpp"
#include "robustmv/market_model.hpp"
#include "robustmv/ambiguity_sets.hpp"
#include "robustmv/worst_case_solver.hpp"
#include "robustmv/strategy_engine.hpp"
#include "robustmv/simulator.hpp"
#include "robustmv/io.hpp"
