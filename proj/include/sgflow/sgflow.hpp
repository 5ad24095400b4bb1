#pragma once

#include "sgflow/aubry_mather.hpp"
#include "sgflow/coefficients.hpp"
#include "sgflow/commands.hpp"
#include "sgflow/config.hpp"
#include "sgflow/elliptic_operator.hpp"
#include "sgflow/error.hpp"
#include "sgflow/expression.hpp"
#include "sgflow/flow.hpp"
#include "sgflow/grid.hpp"
#include "sgflow/potential.hpp"
#include "sgflow/quadrature.hpp"
#include "sgflow/random.hpp"
#include "sgflow/spectral.hpp"
#include "sgflow/verify.hpp"
