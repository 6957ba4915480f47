#pragma once

#include "pvt2/analytics.hpp"
#include "pvt2/attention.hpp"
#include "pvt2/backbone.hpp"
#include "pvt2/config.hpp"
#include "pvt2/errors.hpp"
#include "pvt2/gradcheck.hpp"
#include "pvt2/layers.hpp"
#include "pvt2/model_io.hpp"
#include "pvt2/nn.hpp"
#include "pvt2/reference.hpp"
#include "pvt2/tensor.hpp"
