#pragma once

#include "fedwcm/compare.hpp"
#include "fedwcm/config.hpp"
#include "fedwcm/data.hpp"
#include "fedwcm/errors.hpp"
#include "fedwcm/experiment.hpp"
#include "fedwcm/federation.hpp"
#include "fedwcm/metrics.hpp"
#include "fedwcm/mlp.hpp"
#include "fedwcm/paillier.hpp"
#include "fedwcm/params.hpp"
#include "fedwcm/partition.hpp"
#include "fedwcm/protocol.hpp"
#include "fedwcm/rng.hpp"
#include "fedwcm/scoring.hpp"
#include "fedwcm/tensor.hpp"
