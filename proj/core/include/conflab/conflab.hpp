#pragma once

#include "conflab/curvature.hpp"
#include "conflab/diagnostics.hpp"
#include "conflab/error.hpp"
#include "conflab/grid_io.hpp"
#include "conflab/integrate.hpp"
#include "conflab/manifold.hpp"
#include "conflab/metric.hpp"
#include "conflab/random.hpp"
#include "conflab/schrodinger.hpp"
#include "conflab/weight.hpp"
