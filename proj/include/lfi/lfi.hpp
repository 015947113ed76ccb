#pragma once

#include "core.hpp"
#include "distances.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "harness.hpp"
#include "io.hpp"
#include "likelihoods.hpp"
#include "models.hpp"
#include "random.hpp"
#include "sampler.hpp"
#include "stats.hpp"
#include "summaries.hpp"
