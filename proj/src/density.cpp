#include "bilip/density.hpp"

namespace bilip {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double frob2(const Mat2& a) { return a.squaredNorm(); }
}  // namespace

double Density::operator()(const Mat2& a) const {
    if (gated && !in_distortion_class(a, rho, true)) return kInf;
    return raw(a);
}

bool Density::finite_at(const Mat2& a) const {
    return !gated || in_distortion_class(a, rho, true);
}

Density single_well(const Mat2& a, double rho) {
    Density d;
    d.raw = [a](const Mat2& b) { return frob2(b - a); };
    d.rho = rho;
    d.gated = std::isfinite(rho);
    d.convex = true;
    d.wells = {a};
    d.name = "single_well";
    return d;
}

Density double_well(const Mat2& a1, const Mat2& a2, double rho) {
    Density d;
    d.raw = [a1, a2](const Mat2& b) { return std::min(frob2(b - a1), frob2(b - a2)); };
    d.rho = rho;
    d.gated = true;
    d.convex = false;
    d.wells = {a1, a2};
    d.name = "double_well";
    return d;
}

Density blowup_density() {
    Density d;
    d.raw = [](const Mat2& b) {
        const double det = b.determinant();
        if (det <= 0) return kInf;
        return frob2(b) + 1.0 / det;
    };
    d.rho = kInf;
    d.gated = true;  // rho = +inf: the gate only demands det > 0
    d.convex = false;
    d.name = "blowup";
    return d;
}

Density constant_density(double c) {
    Density d;
    d.raw = [c](const Mat2&) { return c; };
    d.gated = false;
    d.convex = true;
    d.name = "constant";
    return d;
}

Density det_density() {
    Density d;
    d.raw = [](const Mat2& b) { return b.determinant(); };
    d.gated = false;
    d.convex = false;
    d.name = "det";
    return d;
}

Density frobenius_density() {
    Density d;
    d.raw = [](const Mat2& b) { return frob2(b); };
    d.gated = false;
    d.convex = true;
    d.name = "frobenius";
    return d;
}

}  // namespace bilip
