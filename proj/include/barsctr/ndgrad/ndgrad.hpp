#pragma once

#include "barsctr/ndgrad/gradcheck.hpp"
#include "barsctr/ndgrad/ops.hpp"
#include "barsctr/ndgrad/optim.hpp"
#include "barsctr/ndgrad/tensor.hpp"
