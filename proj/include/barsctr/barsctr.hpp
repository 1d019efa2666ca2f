#pragma once

#include "barsctr/bench/experiment.hpp"
#include "barsctr/bench/grid.hpp"
#include "barsctr/bench/leaderboard.hpp"
#include "barsctr/bench/trials.hpp"
#include "barsctr/data/pipeline.hpp"
#include "barsctr/metrics.hpp"
#include "barsctr/models/diagnostics.hpp"
#include "barsctr/models/zoo.hpp"
#include "barsctr/ndgrad/ndgrad.hpp"
#include "barsctr/synth/generator.hpp"
#include "barsctr/train/trainer.hpp"
