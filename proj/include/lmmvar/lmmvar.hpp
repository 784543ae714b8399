#pragma once

#include "lmmvar/boxplot.hpp"
#include "lmmvar/config.hpp"
#include "lmmvar/csv.hpp"
#include "lmmvar/dataset.hpp"
#include "lmmvar/design.hpp"
#include "lmmvar/distributions.hpp"
#include "lmmvar/errors.hpp"
#include "lmmvar/hyperparams.hpp"
#include "lmmvar/inference.hpp"
#include "lmmvar/lmm.hpp"
#include "lmmvar/optimize.hpp"
#include "lmmvar/report.hpp"
#include "lmmvar/satterthwaite.hpp"
#include "lmmvar/simulate.hpp"
