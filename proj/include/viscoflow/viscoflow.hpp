#pragma once

#include "viscoflow/error.hpp"
#include "viscoflow/tensor.hpp"
#include "viscoflow/material.hpp"
#include "viscoflow/discrete_space.hpp"
#include "viscoflow/initial_data.hpp"
#include "viscoflow/field_io.hpp"
#include "viscoflow/solvers.hpp"
#include "viscoflow/nonlinear_flow.hpp"
#include "viscoflow/linear_flow.hpp"
#include "viscoflow/convergence_lab.hpp"
#include "viscoflow/property_suite.hpp"
#include "viscoflow/report.hpp"
#include "viscoflow/config.hpp"
