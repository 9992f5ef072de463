#pragma once

#include "mlchain/dataset.hpp"
#include "mlchain/error.hpp"
#include "mlchain/matrix.hpp"
#include "mlchain/metrics.hpp"
#include "mlchain/mlboost.hpp"
#include "mlchain/parallel.hpp"
#include "mlchain/random.hpp"
#include "mlchain/rdt.hpp"
#include "mlchain/runner.hpp"
#include "mlchain/serialize.hpp"
#include "mlchain/synthetic.hpp"
#include "mlchain/xdcc.hpp"
