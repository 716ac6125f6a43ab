#include <doctest.h>

#include "vmb.h"
