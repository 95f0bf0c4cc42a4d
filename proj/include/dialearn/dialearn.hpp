/* Copyright 2026 The dialearn Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "dialearn/bandit.hpp"
#include "dialearn/dialogue.hpp"
#include "dialearn/embedding.hpp"
#include "dialearn/error.hpp"
#include "dialearn/harness.hpp"
#include "dialearn/ktdq.hpp"
#include "dialearn/parser.hpp"
#include "dialearn/protocol.hpp"
#include "dialearn/service.hpp"
#include "dialearn/simulator.hpp"
#include "dialearn/task.hpp"
