// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ensner/align.hpp"
#include "ensner/checkpoint.hpp"
#include "ensner/config.hpp"
#include "ensner/corpus.hpp"
#include "ensner/crf.hpp"
#include "ensner/embed.hpp"
#include "ensner/eval.hpp"
#include "ensner/model.hpp"
#include "ensner/store.hpp"
#include "ensner/synth.hpp"
#include "ensner/train.hpp"
