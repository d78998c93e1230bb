#pragma once

#include "pidkl/autodiff.hpp"
#include "pidkl/data.hpp"
#include "pidkl/errors.hpp"
#include "pidkl/fd_solvers.hpp"
#include "pidkl/gp.hpp"
#include "pidkl/harness.hpp"
#include "pidkl/kernels.hpp"
#include "pidkl/linalg.hpp"
#include "pidkl/params.hpp"
#include "pidkl/physics.hpp"
#include "pidkl/training.hpp"
