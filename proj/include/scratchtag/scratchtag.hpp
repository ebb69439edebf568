#pragma once

#include "scratchtag/core.hpp"
#include "scratchtag/corpus.hpp"
#include "scratchtag/crf.hpp"
#include "scratchtag/features.hpp"
#include "scratchtag/model.hpp"
#include "scratchtag/net.hpp"
#include "scratchtag/tagscheme.hpp"
#include "scratchtag/train.hpp"
