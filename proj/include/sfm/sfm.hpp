#pragma once

#include "sfm/commands.hpp"
#include "sfm/config.hpp"
#include "sfm/data_harness.hpp"
#include "sfm/errors.hpp"
#include "sfm/feature_map.hpp"
#include "sfm/io.hpp"
#include "sfm/model_gmm.hpp"
#include "sfm/model_hmm.hpp"
#include "sfm/numerics.hpp"
#include "sfm/pac_bayes.hpp"
#include "sfm/parallel.hpp"
#include "sfm/posterior_sampler.hpp"
#include "sfm/predictor.hpp"
#include "sfm/random.hpp"
#include "sfm/selftest.hpp"
#include "sfm/task.hpp"
#include "sfm/trainer.hpp"
