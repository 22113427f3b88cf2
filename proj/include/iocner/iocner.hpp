#pragma once

#include "iocner/baseline.hpp"
#include "iocner/checkpoint.hpp"
#include "iocner/config.hpp"
#include "iocner/corpus.hpp"
#include "iocner/crf.hpp"
#include "iocner/embeddings.hpp"
#include "iocner/error.hpp"
#include "iocner/eval.hpp"
#include "iocner/features.hpp"
#include "iocner/model.hpp"
#include "iocner/netcore.hpp"
#include "iocner/synthetic.hpp"
#include "iocner/trainer.hpp"
