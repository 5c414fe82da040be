#pragma once

#include "otstab/common.hpp"
#include "otstab/complex_power.hpp"
#include "otstab/quadrature.hpp"
#include "otstab/mesh.hpp"
#include "otstab/fields.hpp"
#include "otstab/coefficient_model.hpp"
#include "otstab/moment_integral.hpp"
#include "otstab/elliptic_solver.hpp"
#include "otstab/dn_map.hpp"
#include "otstab/singular_solutions.hpp"
#include "otstab/stability.hpp"
#include "otstab/config.hpp"
