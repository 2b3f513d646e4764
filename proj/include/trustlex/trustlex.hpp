#pragma once

// Language-based assessment of trait trustfulness: featurize user text,
// reduce, fit a word-count-weighted ridge model to questionnaire scores,
// evaluate, and surface the most trust-distinguishing words.

#include "trustlex/corpus.hpp"
#include "trustlex/dla.hpp"
#include "trustlex/eval.hpp"
#include "trustlex/features.hpp"
#include "trustlex/model.hpp"
#include "trustlex/reduce.hpp"
#include "trustlex/stats.hpp"
#include "trustlex/synth.hpp"
#include "trustlex/tokenizer.hpp"
