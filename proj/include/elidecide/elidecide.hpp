#pragma once

#include "elidecide/baselines.hpp"
#include "elidecide/boundary_training.hpp"
#include "elidecide/ellipsoid.hpp"
#include "elidecide/embd_io.hpp"
#include "elidecide/error.hpp"
#include "elidecide/eval.hpp"
#include "elidecide/feature_space.hpp"
#include "elidecide/losses.hpp"
#include "elidecide/model_io.hpp"
#include "elidecide/pseudo_open.hpp"
#include "elidecide/rng.hpp"
#include "elidecide/synth.hpp"
