#pragma once

#include "cauvis/errors.hpp"
#include "cauvis/numerics/matrix.hpp"
#include "cauvis/numerics/linalg.hpp"
#include "cauvis/numerics/svd.hpp"
#include "cauvis/numerics/fourier.hpp"
#include "cauvis/numerics/random.hpp"
#include "cauvis/numerics/cmat_io.hpp"
#include "cauvis/autograd/tape.hpp"
#include "cauvis/autograd/ops.hpp"
#include "cauvis/autograd/gradcheck.hpp"
#include "cauvis/autograd/optim.hpp"
#include "cauvis/autograd/checkpoint.hpp"
#include "cauvis/cap/cross_attention.hpp"
#include "cauvis/cap/spectrum.hpp"
#include "cauvis/adapter/adapter.hpp"
#include "cauvis/causal/scm.hpp"
#include "cauvis/causal/oracle.hpp"
#include "cauvis/biasbench/dataset.hpp"
#include "cauvis/biasbench/model.hpp"
#include "cauvis/biasbench/sweep.hpp"
