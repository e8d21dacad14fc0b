// Copyright The emilab Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <span>
#include <string>

namespace emilab::sparse {

/// Action z = M^{-1} r of a symmetric positive definite preconditioner.
class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    virtual void apply(std::span<const double> r, std::span<double> z) const = 0;
    virtual std::string name() const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
public:
    void apply(std::span<const double> r, std::span<double> z) const override
    {
        std::copy(r.begin(), r.end(), z.begin());
    }
    std::string name() const override { return "none"; }
};

} // namespace emilab::sparse
