#pragma once

// Umbrella header for the SF-GNN lab: dual node/message representation GNNs
// with decoder-based self-filter gating, plus the tensor engine, graph
// stores, trainer, and evaluation stack behind them.

#include "sfgnn/matrix.hpp"
#include "sfgnn/rng.hpp"
#include "sfgnn/tape.hpp"
#include "sfgnn/optim.hpp"
#include "sfgnn/graph.hpp"
#include "sfgnn/synthetic.hpp"
#include "sfgnn/encoders.hpp"
#include "sfgnn/decoders.hpp"
#include "sfgnn/self_filter.hpp"
#include "sfgnn/config.hpp"
#include "sfgnn/model.hpp"
#include "sfgnn/evaluator.hpp"
#include "sfgnn/trainer.hpp"
