// gvqa.hpp — umbrella header.
#pragma once

#include "gvqa/checkpoint.hpp"
#include "gvqa/evaluation.hpp"
#include "gvqa/grad_check.hpp"
#include "gvqa/graphs.hpp"
#include "gvqa/ingest.hpp"
#include "gvqa/init.hpp"
#include "gvqa/model.hpp"
#include "gvqa/synthetic.hpp"
#include "gvqa/tape.hpp"
#include "gvqa/tensor.hpp"
#include "gvqa/training.hpp"
