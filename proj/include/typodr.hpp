/*
 * Copyright (c) 2026 The typodr Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "typodr/checkpoint.hpp"
#include "typodr/common.hpp"
#include "typodr/config.hpp"
#include "typodr/data.hpp"
#include "typodr/encoder.hpp"
#include "typodr/eval.hpp"
#include "typodr/experiment.hpp"
#include "typodr/gradcheck.hpp"
#include "typodr/losses.hpp"
#include "typodr/ranking.hpp"
#include "typodr/rng.hpp"
#include "typodr/stats.hpp"
#include "typodr/trainer.hpp"
#include "typodr/typo_gen.hpp"
