/* float32 GELU forward: x * Phi(x) with a clamped rational erf.
 * Max |Phi error| ~2e-7 on the float32 grid; the loop auto-vectorizes at -O3. */
#ifndef ADANCA_GELU_H
#define ADANCA_GELU_H
#include <stddef.h>

#pragma GCC push_options
/* lets gcc if-convert the clamps; NaN still propagates through x * cdf */
#pragma GCC optimize("no-trapping-math")

static inline float adanca_erf_f32(float x) {
    x = x < 4.0f ? x : 4.0f;
    x = x > -4.0f ? x : -4.0f;
    const float x2 = x * x;
    float p = x2 * -2.72614225801306e-10f + 2.77068142495902e-08f;
    p = p * x2 - 2.10102402082508e-06f;
    p = p * x2 - 5.69250639462346e-05f;
    p = p * x2 - 7.34990630326855e-04f;
    p = p * x2 - 2.95459980854025e-03f;
    p = p * x2 - 1.60960333262415e-02f;
    float q = x2 * -1.45660718464996e-05f - 2.13374055278905e-04f;
    q = q * x2 - 1.68282697438203e-03f;
    q = q * x2 - 7.37332916720468e-03f;
    q = q * x2 - 1.42647390514189e-02f;
    return x * p / q;
}

static void adanca_gelu_f32(const float *x, float *y, float *cdf, ptrdiff_t n) {
    for (ptrdiff_t i = 0; i < n; i++) {
        const float c = 0.5f + 0.5f * adanca_erf_f32(x[i] * 0.70710678118654752f);
        cdf[i] = c;
        y[i] = x[i] * c;
    }
}

#pragma GCC pop_options
#endif
