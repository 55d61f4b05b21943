#pragma once

#include "sdx/autodiff/checkpoint.hpp"
#include "sdx/autodiff/conv.hpp"
#include "sdx/autodiff/layers.hpp"
#include "sdx/autodiff/ops.hpp"
#include "sdx/autodiff/parameter.hpp"
#include "sdx/autodiff/penalty.hpp"
#include "sdx/autodiff/tensor.hpp"
#include "sdx/autodiff/var.hpp"
#include "sdx/nn/sequential.hpp"
