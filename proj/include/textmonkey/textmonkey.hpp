// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "textmonkey/archive.hpp"
#include "textmonkey/config.hpp"
#include "textmonkey/encoder.hpp"
#include "textmonkey/error.hpp"
#include "textmonkey/eval_io.hpp"
#include "textmonkey/grounding.hpp"
#include "textmonkey/metrics.hpp"
#include "textmonkey/numerics.hpp"
#include "textmonkey/pipeline.hpp"
#include "textmonkey/redundancy.hpp"
#include "textmonkey/resampler.hpp"
#include "textmonkey/rng.hpp"
#include "textmonkey/split.hpp"
