#ifndef AUTOPOOL_AUTOPOOL_HPP
#define AUTOPOOL_AUTOPOOL_HPP

#include "autopool/dataset.hpp"
#include "autopool/error.hpp"
#include "autopool/evaluation.hpp"
#include "autopool/features.hpp"
#include "autopool/image_io.hpp"
#include "autopool/pooling.hpp"

#endif  // AUTOPOOL_AUTOPOOL_HPP
