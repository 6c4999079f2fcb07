#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace gaborcomp {

using cplx = std::complex<double>;

// Base for every error the library raises. Subcommands map these onto
// process exit codes, so throw the most specific type available.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidSegment : public Error { public: using Error::Error; };
class InvalidLabel : public Error { public: using Error::Error; };
class InvalidSpec : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class DecodeError : public Error { public: using Error::Error; };
class InvalidAtomParams : public Error { public: using Error::Error; };
class InvalidResolution : public Error { public: using Error::Error; };
class DimError : public Error { public: using Error::Error; };
class EmptyInput : public Error { public: using Error::Error; };
class NumericalError : public Error { public: using Error::Error; };
class InvalidK : public Error { public: using Error::Error; };
class DegenerateDataset : public Error { public: using Error::Error; };

// Deterministic pseudo-random source. Both the uniform and the gaussian
// draw are implemented by hand so that a fixed seed yields the same
// stream on every platform and standard library.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();
    // Uniform on [0, 1) with 53 bits of mantissa.
    double next_double();
    // Standard normal via Box-Muller; draws are cached in pairs.
    double next_gaussian();
    // Uniform integer on [0, n), n >= 1.
    uint64_t next_below(uint64_t n);

private:
    uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Stable combiner for deriving independent substreams from one seed.
uint64_t mix_seed(uint64_t a, uint64_t b);

// Worker count honouring the GABORCOMP_THREADS environment variable
// (0 or unset means hardware concurrency).
int worker_count();

// Runs fn(0..n-1) across workers. Items must be independent; each item
// writes only to its own slot, so results do not depend on the worker
// count or the interleaving.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace gaborcomp
