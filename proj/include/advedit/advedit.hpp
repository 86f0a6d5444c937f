#pragma once

#include "advedit/attacks.hpp"
#include "advedit/classifier.hpp"
#include "advedit/dataset.hpp"
#include "advedit/edits.hpp"
#include "advedit/error.hpp"
#include "advedit/harness.hpp"
#include "advedit/kernels.hpp"
#include "advedit/models.hpp"
#include "advedit/neural.hpp"
#include "advedit/parallel.hpp"
#include "advedit/random.hpp"
#include "advedit/svm.hpp"
#include "advedit/ted.hpp"
#include "advedit/tree.hpp"
