/* Auto-generated fixed-point tree model. DO NOT EDIT. */
#include <math.h>
#include <stdint.h>

#define TINY_N_FEATURES 3
#define TINY_N_TREES 2
#define TINY_FEATURE_FRAC 8
#define TINY_LEAF_FRAC 16
#define TINY_BASE_Q -4096

static const float tiny_scaler_mean[TINY_N_FEATURES] = {0x1.4p+3f, 0x1.4p+1f, 0x1p-2f};
static const float tiny_scaler_std[TINY_N_FEATURES] = {0x1p+2f, 0x1p+3f, 0x1p-1f};

static const uint8_t tiny_feature[4] = {
    0, 255, 255, 255
};
static const int16_t tiny_threshold_q[4] = {
    64, 0, 0, 0
};
static const int16_t tiny_left[4] = {
    1, -1, -1, -1
};
static const int16_t tiny_right[4] = {
    2, -1, -1, -1
};
static const int32_t tiny_leaf_q[4] = {
    0, -30000, 70000, 12345
};
static const uint16_t tiny_root[TINY_N_TREES] = {
    0, 3
};

static int32_t tiny_sat_add(int32_t a, int32_t b) {
    if (b > 0 && a > INT32_MAX - b) return INT32_MAX;
    if (b < 0 && a < INT32_MIN - b) return INT32_MIN;
    return a + b;
}

/* x: TINY_N_FEATURES differential feature values. Applies the
   training z-score and converts to the feature fixed point, rounding to
   nearest-even and saturating. Double math keeps it bit-identical to the
   host pipeline. */
void tiny_prepare(const double *x, int16_t *x_q) {
    int i;
    for (i = 0; i < TINY_N_FEATURES; ++i) {
        const double z = (x[i] - (double)tiny_scaler_mean[i]) / (double)tiny_scaler_std[i];
        const double s = nearbyint(ldexp(z, TINY_FEATURE_FRAC));
        x_q[i] = (int16_t)(s >= 32767.0 ? 32767 : (s <= -32768.0 ? -32768 : s));
    }
}

/* x_q: TINY_N_FEATURES features, Q7.8 fixed point. Returns the raw score in Q15.16. */
int32_t tiny_score(const int16_t *x_q) {
    int32_t acc = TINY_BASE_Q;
    uint16_t t;
    for (t = 0; t < TINY_N_TREES; ++t) {
        uint16_t n = tiny_root[t];
        while (tiny_feature[n] != 0xFF) {
            const int go_left = x_q[tiny_feature[n]] <= tiny_threshold_q[n];
            n = (uint16_t)(tiny_root[t] + (go_left ? tiny_left[n] : tiny_right[n]));
        }
        acc = tiny_sat_add(acc, tiny_leaf_q[n]);
    }
    return acc;
}

int tiny_label(const int16_t *x_q) { return tiny_score(x_q) >= 0; }
