#pragma once

#include "fsb/analysis.hpp"
#include "fsb/benchmark.hpp"
#include "fsb/classifier.hpp"
#include "fsb/ensembles.hpp"
#include "fsb/episodes.hpp"
#include "fsb/error.hpp"
#include "fsb/feature_store.hpp"
#include "fsb/parallel.hpp"
#include "fsb/reference.hpp"
#include "fsb/reporting.hpp"
#include "fsb/rng.hpp"
#include "fsb/synthetic.hpp"
#include "fsb/tuning.hpp"
