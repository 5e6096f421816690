#pragma once

#include "lnmfa/aitken.hpp"
#include "lnmfa/compositional.hpp"
#include "lnmfa/elbo.hpp"
#include "lnmfa/io.hpp"
#include "lnmfa/mixture.hpp"
#include "lnmfa/model_family.hpp"
#include "lnmfa/selection.hpp"
#include "lnmfa/simulate.hpp"
#include "lnmfa/varinf.hpp"
#include "lnmfa/version.hpp"
#include "lnmfa/woodbury.hpp"
