#pragma once

// Dynamic demonstrations controller: picks the k-shot setting for a text
// classification task and a given model by scoring each feasible k on a
// small, deliberately chosen evaluation set.

#include "d2ctl/backend.hpp"
#include "d2ctl/budget.hpp"
#include "d2ctl/cache.hpp"
#include "d2ctl/controller.hpp"
#include "d2ctl/dataset.hpp"
#include "d2ctl/distribution.hpp"
#include "d2ctl/error.hpp"
#include "d2ctl/http_backend.hpp"
#include "d2ctl/iicscore.hpp"
#include "d2ctl/prompt.hpp"
#include "d2ctl/synthetic_backend.hpp"
#include "d2ctl/tokenizer.hpp"
#include "d2ctl/util.hpp"
