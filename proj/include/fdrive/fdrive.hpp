// Copyright 2026 The fdrive Authors. All Rights Reserved.
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

#pragma once

#include "fdrive/adaptation.hpp"
#include "fdrive/config.hpp"
#include "fdrive/contour.hpp"
#include "fdrive/core.hpp"
#include "fdrive/drive.hpp"
#include "fdrive/filterbank.hpp"
#include "fdrive/io.hpp"
#include "fdrive/pipeline.hpp"
#include "fdrive/regression.hpp"
#include "fdrive/response.hpp"
#include "fdrive/sync.hpp"
#include "fdrive/synth.hpp"
