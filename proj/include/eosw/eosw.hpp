// Copyright 2026 The eosw Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// \file
/// Umbrella header.

#pragma once

#include "eosw/checkpoint.hpp"
#include "eosw/config.hpp"
#include "eosw/data.hpp"
#include "eosw/decode.hpp"
#include "eosw/error.hpp"
#include "eosw/experiment.hpp"
#include "eosw/log.hpp"
#include "eosw/loss.hpp"
#include "eosw/metrics.hpp"
#include "eosw/ops.hpp"
#include "eosw/tensor.hpp"
#include "eosw/train.hpp"
#include "eosw/transformer.hpp"
#include "eosw/vocab.hpp"
