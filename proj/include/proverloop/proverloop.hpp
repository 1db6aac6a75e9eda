// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proverloop/coldstart.hpp"
#include "proverloop/errors.hpp"
#include "proverloop/evalharness.hpp"
#include "proverloop/jsonl.hpp"
#include "proverloop/model.hpp"
#include "proverloop/orchestrator.hpp"
#include "proverloop/policy.hpp"
#include "proverloop/pool.hpp"
#include "proverloop/reward.hpp"
#include "proverloop/sha256.hpp"
#include "proverloop/spans.hpp"
#include "proverloop/transcript.hpp"
#include "proverloop/verifier.hpp"
