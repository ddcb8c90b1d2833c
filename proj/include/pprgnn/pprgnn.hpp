#pragma once

#include "pprgnn/error.hpp"
#include "pprgnn/dense.hpp"
#include "pprgnn/csr.hpp"
#include "pprgnn/graph.hpp"
#include "pprgnn/layer.hpp"
#include "pprgnn/backward.hpp"
#include "pprgnn/model.hpp"
#include "pprgnn/optim.hpp"
#include "pprgnn/data.hpp"
#include "pprgnn/checkpoint.hpp"
#include "pprgnn/training.hpp"
#include "pprgnn/config.hpp"
