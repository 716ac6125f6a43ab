#include <doctest.h>

#include "vmb/harness.hpp"
