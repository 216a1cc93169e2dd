#pragma once

#include "cuspfa/distributions.hpp"
#include "cuspfa/errors.hpp"
#include "cuspfa/factor_model.hpp"
#include "cuspfa/io.hpp"
#include "cuspfa/mcmc.hpp"
#include "cuspfa/postprocess.hpp"
#include "cuspfa/rng.hpp"
#include "cuspfa/shrinkage.hpp"
#include "cuspfa/study.hpp"
