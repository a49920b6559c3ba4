// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "psla/aggregate.hpp"
#include "psla/augment.hpp"
#include "psla/corpus.hpp"
#include "psla/error.hpp"
#include "psla/experiment.hpp"
#include "psla/labelfix.hpp"
#include "psla/matrix.hpp"
#include "psla/metrics.hpp"
#include "psla/model.hpp"
#include "psla/ontology.hpp"
#include "psla/rng.hpp"
#include "psla/sampler.hpp"
#include "psla/text.hpp"
#include "psla/train.hpp"
