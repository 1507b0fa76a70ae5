#pragma once

#include "monet/checkpoint.hpp"
#include "monet/config.hpp"
#include "monet/datasets.hpp"
#include "monet/evaluation.hpp"
#include "monet/graph.hpp"
#include "monet/mmfv.hpp"
#include "monet/model.hpp"
#include "monet/pipeline.hpp"
#include "monet/synthetic.hpp"
#include "monet/training.hpp"
