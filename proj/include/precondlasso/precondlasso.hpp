#pragma once

#include "precondlasso/numerics.hpp"
#include "precondlasso/graph.hpp"
#include "precondlasso/ggm.hpp"
#include "precondlasso/preconditioner.hpp"
#include "precondlasso/solvers.hpp"
#include "precondlasso/compat.hpp"
#include "precondlasso/hard_instances.hpp"
#include "precondlasso/experiments.hpp"
