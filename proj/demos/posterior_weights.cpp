// How strongly each prior down-weights a bin as its normalized power s grows.

#include <cstdio>

#include "gsmfast/gsmfast.hpp"

int main() {
    const std::size_t M = 2;
    const gsmfast::GsmVariant variants[] = {
        gsmfast::make_gaussian(),       gsmfast::make_student_t(40.0),
        gsmfast::make_leptokurtic_gg(1.0), gsmfast::make_gh(-2.0, 15.0, 1.0),
        gsmfast::make_nig(15.0, 1.0),
    };
    std::printf("%10s", "s");
    for (const auto& v : variants)
        std::printf("%12s", gsmfast::variant_name(v).c_str());
    std::printf("\n");
    for (double s : {0.01, 0.1, 1.0, 2.0, 10.0, 100.0, 1000.0}) {
        std::printf("%10g", s);
        for (const auto& v : variants)
            std::printf("%12.5f", gsmfast::posterior_inv_phi({s, M}, v));
        std::printf("\n");
    }
}
