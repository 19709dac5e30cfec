#pragma once

#include "evacmix/errors.hpp"
#include "evacmix/normal.hpp"
#include "evacmix/random.hpp"
#include "evacmix/dataset.hpp"
#include "evacmix/model_spec.hpp"
#include "evacmix/draws.hpp"
#include "evacmix/kernel.hpp"
#include "evacmix/bfgs.hpp"
#include "evacmix/estimate.hpp"
#include "evacmix/result_io.hpp"
#include "evacmix/wtp.hpp"
#include "evacmix/simulate.hpp"
