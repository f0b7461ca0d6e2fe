#pragma once

#include "clonebo/error.hpp"
#include "clonebo/random.hpp"
#include "clonebo/sequence.hpp"
#include "clonebo/clone_model.hpp"
#include "clonebo/conjugate_model.hpp"
#include "clonebo/markov_model.hpp"
#include "clonebo/synthetic.hpp"
#include "clonebo/likelihood.hpp"
#include "clonebo/quadrature_oracle.hpp"
#include "clonebo/twisted_smc.hpp"
#include "clonebo/enumerate.hpp"
#include "clonebo/posterior.hpp"
#include "clonebo/optimizer.hpp"
#include "clonebo/io.hpp"
#include "clonebo/harness.hpp"
