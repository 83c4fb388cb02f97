#pragma once

#include "rdsc/tensor_core/conv.hpp"
#include "rdsc/tensor_core/graph.hpp"
#include "rdsc/tensor_core/ops.hpp"
#include "rdsc/tensor_core/spatial.hpp"
#include "rdsc/tensor_core/tensor.hpp"
