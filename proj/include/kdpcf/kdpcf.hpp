#pragma once

#include "kdpcf/clustering.hpp"
#include "kdpcf/common.hpp"
#include "kdpcf/data.hpp"
#include "kdpcf/dp_sampler.hpp"
#include "kdpcf/eval.hpp"
#include "kdpcf/recommend.hpp"
#include "kdpcf/similarity.hpp"
