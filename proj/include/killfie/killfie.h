#ifndef KILLFIE_KILLFIE_H
#define KILLFIE_KILLFIE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define KF_API __declspec(dllexport)
#else
#define KF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kf_status {
    KF_OK = 0,
    KF_ERR_INVALID_ARGUMENT = 1,
    KF_ERR_CONFIG = 2,
    KF_ERR_PROVIDER = 3,
    KF_ERR_DATA = 4,
    KF_ERR_INTERNAL = 5
} kf_status;

typedef struct kf_context kf_context;
typedef struct kf_model kf_model;

KF_API const char* kf_version(void);

/* A context owns the last error message and network counters. Not thread-safe;
   use one context per thread. */
KF_API kf_context* kf_context_new(void);
KF_API void kf_context_free(kf_context* ctx);

/* Message of the last failed call on this context, "" after a success. */
KF_API const char* kf_last_error(const kf_context* ctx);

/* HTTP requests issued by provider-backed calls on this context. */
KF_API uint64_t kf_network_calls(const kf_context* ctx);

/* Frees strings returned through `char** out` parameters. */
KF_API void kf_string_free(char* s);

/* JSON request in, JSON response out. On success `*response` is a heap
   string to release with kf_string_free; on failure it is set to NULL. */
KF_API kf_status kf_ingest(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_incident_stats(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_geofeat(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_textfeat(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_ks(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_kappa(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_train(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_predict(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_cv(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_table4(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_risk_cv(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_run(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_report(kf_context* ctx, const char* request, char** response);
KF_API kf_status kf_synth(kf_context* ctx, const char* request, char** response);

/* Two-sample Kolmogorov-Smirnov test. */
KF_API kf_status kf_ks_two_sample(kf_context* ctx, const double* a, size_t n, const double* b, size_t m, double* d,
                                  double* p);

/* Fleiss' kappa over an items x categories matrix of rater counts (row-major).
   `*defined` is 0 when kappa is undefined; `*kappa` is then NaN. */
KF_API kf_status kf_fleiss_kappa(kf_context* ctx, const uint32_t* counts, size_t items, size_t categories,
                                 double* kappa, int* defined);

/* Trained model handles, loaded from files written by kf_train. Rows passed
   to kf_model_predict are in the model's transformed column order. */
KF_API kf_status kf_model_load(kf_context* ctx, const char* path, kf_model** out);
KF_API void kf_model_free(kf_model* model);
KF_API size_t kf_model_n_features(const kf_model* model);
KF_API kf_status kf_model_predict(kf_context* ctx, const kf_model* model, const double* rows, size_t n_rows,
                                  size_t n_cols, int* labels);

#ifdef __cplusplus
}
#endif

#endif
