#pragma once

#include "gptrans/errors.hpp"
#include "gptrans/tensor.hpp"
#include "gptrans/autodiff.hpp"
#include "gptrans/ops.hpp"
#include "gptrans/gradcheck.hpp"
#include "gptrans/graph.hpp"
#include "gptrans/batch.hpp"
#include "gptrans/config.hpp"
#include "gptrans/embedding.hpp"
#include "gptrans/regularize.hpp"
#include "gptrans/gpa.hpp"
#include "gptrans/model.hpp"
#include "gptrans/flops.hpp"
#include "gptrans/optim.hpp"
#include "gptrans/loss.hpp"
#include "gptrans/checkpoint.hpp"
#include "gptrans/parallel.hpp"
#include "gptrans/trainer.hpp"
#include "gptrans/synth.hpp"
#include "gptrans/commands.hpp"
