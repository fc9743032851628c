#pragma once

#include "mvfbm/assignment.hpp"
#include "mvfbm/errors.hpp"
#include "mvfbm/experiments.hpp"
#include "mvfbm/fbm.hpp"
#include "mvfbm/fracalc.hpp"
#include "mvfbm/grid.hpp"
#include "mvfbm/measures.hpp"
#include "mvfbm/model.hpp"
#include "mvfbm/quadrature.hpp"
#include "mvfbm/seeds.hpp"
#include "mvfbm/simulate.hpp"
