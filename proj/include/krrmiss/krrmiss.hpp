#pragma once

#include "krrmiss/error.hpp"
#include "krrmiss/kernels.hpp"
#include "krrmiss/ridge.hpp"
#include "krrmiss/balance.hpp"
#include "krrmiss/estimate.hpp"
#include "krrmiss/pipeline.hpp"
#include "krrmiss/random.hpp"
#include "krrmiss/simlab.hpp"
#include "krrmiss/dataset.hpp"
#include "krrmiss/cli.hpp"
