/* Host harness: runs the generated model over a test-vector file and
 * prints one JSON line. The model source is included as model.c. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "model.c"

#ifndef ARGMAX_MARGIN
#define ARGMAX_MARGIN 1e-4
#endif

static int fail(const char *msg)
{
    fprintf(stderr, "harness: %s\n", msg);
    return 3;
}

int main(int argc, char **argv)
{
    FILE *f;
    char word[64];
    int version;
    long total = 0, outputs, count, n;
    double max_diff = 0.0;
    long mismatches = 0;

    if (argc != 2) {
        return fail("usage: harness VECTORS");
    }
    f = fopen(argv[1], "r");
    if (f == NULL) {
        return fail("cannot open vectors");
    }
    if (fscanf(f, "%63s %d", word, &version) != 2 || strcmp(word, "tinylight-test-vectors") != 0 || version != 1) {
        return fail("bad magic");
    }
    if (fscanf(f, "%63s", word) != 1 || strcmp(word, "precision") != 0 || fscanf(f, "%63s", word) != 1) {
        return fail("bad precision line");
    }
    if (strcmp(word, TL_MODEL_Q15 ? "q15" : "float32") != 0) {
        return fail("precision does not match the model");
    }
    if (fscanf(f, "%63s", word) != 1 || strcmp(word, "inputs") != 0) {
        return fail("bad inputs line");
    }
    for (;;) {
        if (fscanf(f, "%63s", word) != 1) {
            return fail("truncated header");
        }
        if (strcmp(word, "outputs") == 0) {
            break;
        }
        total += strtol(word, NULL, 10);
    }
    if (fscanf(f, "%ld", &outputs) != 1 || fscanf(f, "%63s %ld", word, &count) != 2 || strcmp(word, "count") != 0) {
        return fail("bad outputs/count lines");
    }
    if (total != TL_MODEL_TOTAL_INPUTS || outputs != TL_MODEL_OUTPUTS) {
        return fail("vector shape does not match the model");
    }
    for (n = 0; n < count; ++n) {
        float x[TL_MODEL_TOTAL_INPUTS];
        double ref[TL_MODEL_OUTPUTS];
        double got[TL_MODEL_OUTPUTS];
        int k, ref_arg, got_arg = 0, second = -1;
        for (k = 0; k < TL_MODEL_TOTAL_INPUTS; ++k) {
            if (fscanf(f, "%f", &x[k]) != 1) {
                return fail("truncated vector");
            }
        }
        for (k = 0; k < TL_MODEL_OUTPUTS; ++k) {
            if (fscanf(f, "%lf", &ref[k]) != 1) {
                return fail("truncated vector");
            }
        }
        if (fscanf(f, "%d", &ref_arg) != 1) {
            return fail("truncated vector");
        }
        {
#if TL_MODEL_Q15
            int16_t xq[TL_MODEL_TOTAL_INPUTS];
            int32_t q[TL_MODEL_OUTPUTS];
            TL_MODEL_QUANTIZE_PACKED(x, xq);
            TL_MODEL_FORWARD_PACKED(xq, q);
#else
            float q[TL_MODEL_OUTPUTS];
            TL_MODEL_FORWARD_PACKED(x, q);
#endif
            for (k = 0; k < TL_MODEL_OUTPUTS; ++k) {
                got[k] = (double)q[k];
            }
        }
        for (k = 0; k < TL_MODEL_OUTPUTS; ++k) {
            double d = fabs(got[k] - ref[k]);
            if (d > max_diff || d != d) {
                max_diff = d;
            }
            if (got[k] > got[got_arg]) {
                got_arg = k;
            }
            if (k != ref_arg && (second < 0 || ref[k] > ref[second])) {
                second = k;
            }
        }
        if (got_arg != ref_arg && (second < 0 || ref[ref_arg] - ref[second] > ARGMAX_MARGIN)) {
            ++mismatches;
        }
    }
    fclose(f);
    printf("{\"vectors\":%ld,\"max_abs_diff\":%.9g,\"argmax_mismatches\":%ld}\n", count, max_diff, mismatches);
    return 0;
}
