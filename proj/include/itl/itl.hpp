#pragma once

#include "itl/constraints.hpp"
#include "itl/dataset.hpp"
#include "itl/envs.hpp"
#include "itl/estimator.hpp"
#include "itl/experiment.hpp"
#include "itl/hmc.hpp"
#include "itl/io.hpp"
#include "itl/mce.hpp"
#include "itl/mdp.hpp"
#include "itl/metrics.hpp"
#include "itl/qp.hpp"
#include "itl/rng.hpp"
#include "itl/tensor.hpp"
