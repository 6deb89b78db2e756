#pragma once

#include "chronoseme/common.hpp"
#include "chronoseme/parallel.hpp"
#include "chronoseme/rng.hpp"
#include "chronoseme/civil_time.hpp"
#include "chronoseme/tz.hpp"
#include "chronoseme/records.hpp"
#include "chronoseme/filter.hpp"
#include "chronoseme/embeddings.hpp"
#include "chronoseme/geo.hpp"
#include "chronoseme/binning.hpp"
#include "chronoseme/stats.hpp"
#include "chronoseme/cosinor.hpp"
#include "chronoseme/heatmap.hpp"
#include "chronoseme/knn.hpp"
#include "chronoseme/entropy.hpp"
#include "chronoseme/solar.hpp"
#include "chronoseme/rhythm.hpp"
#include "chronoseme/scaling.hpp"
#include "chronoseme/synth.hpp"
#include "chronoseme/csv.hpp"
#include "chronoseme/svg.hpp"
#include "chronoseme/pipeline.hpp"
