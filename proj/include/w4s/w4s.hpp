#pragma once

#include "w4s/app.hpp"
#include "w4s/backend.hpp"
#include "w4s/collector.hpp"
#include "w4s/config.hpp"
#include "w4s/dataset.hpp"
#include "w4s/domain.hpp"
#include "w4s/engine.hpp"
#include "w4s/error.hpp"
#include "w4s/eval.hpp"
#include "w4s/extract.hpp"
#include "w4s/metrics.hpp"
#include "w4s/process.hpp"
#include "w4s/prompts.hpp"
#include "w4s/run_dir.hpp"
#include "w4s/rwr_toy.hpp"
#include "w4s/sandbox.hpp"
#include "w4s/self_correction.hpp"
#include "w4s/util.hpp"
