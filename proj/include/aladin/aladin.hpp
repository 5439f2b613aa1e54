#pragma once

#include "aladin/coordination.hpp"
#include "aladin/decentral.hpp"
#include "aladin/driver.hpp"
#include "aladin/examples.hpp"
#include "aladin/expr.hpp"
#include "aladin/lift.hpp"
#include "aladin/linalg.hpp"
#include "aladin/local_solver.hpp"
#include "aladin/parallel.hpp"
#include "aladin/problem.hpp"
#include "aladin/sensitivity.hpp"
