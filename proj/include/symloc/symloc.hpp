// Copyright (c) 2026, The symloc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "symloc/annotator.hpp"
#include "symloc/error.hpp"
#include "symloc/localize.hpp"
#include "symloc/metrics.hpp"
#include "symloc/pipeline.hpp"
#include "symloc/report.hpp"
#include "symloc/synthetic.hpp"
#include "symloc/task_transform.hpp"
#include "symloc/text.hpp"
#include "symloc/trace_io.hpp"
#include "symloc/trace_model.hpp"
