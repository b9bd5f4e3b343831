#ifndef METAIMPACT_METAIMPACT_H
#define METAIMPACT_METAIMPACT_H

#include <stddef.h>

#if defined(METAIMPACT_BUILDING_LIBRARY)
#define MI_API __attribute__((visibility("default")))
#else
#define MI_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mi_status {
    MI_OK = 0,
    MI_ERR_INTERNAL = 1,
    MI_ERR_CONFIG = 2,
    MI_ERR_DATA = 3,
    MI_ERR_CONVERGENCE = 4,
    MI_ERR_IO = 5
} mi_status;

typedef struct mi_panel mi_panel;
typedef struct mi_result mi_result;

MI_API const char* mi_version(void);

/* Message of the last failing call on this thread; empty after success. */
MI_API const char* mi_last_error(void);

/* Strings returned through char** out-parameters are owned by the caller. */
MI_API void mi_string_free(char* s);

/* Fully resolved configuration (defaults overlaid with `overrides_json`,
 * which may be NULL) as pretty-printed JSON. */
MI_API mi_status mi_config_resolve(const char* overrides_json, char** resolved_json);

/* Runs "simulate", "estimate", "decay", "deconvolve" or "report" with the
 * given JSON config. Fits that fail to converge still produce a result;
 * the call then returns MI_ERR_CONVERGENCE with *out set. */
MI_API mi_status mi_run(const char* command, const char* config_json, mi_result** out);

MI_API size_t mi_result_file_count(const mi_result* result);
MI_API const char* mi_result_file_name(const mi_result* result, size_t index);
MI_API const char* mi_result_file_data(const mi_result* result, size_t index, size_t* length);
MI_API const char* mi_result_report(const mi_result* result);
MI_API const char* mi_result_report_name(const mi_result* result);
MI_API int mi_result_converged(const mi_result* result);
MI_API void mi_result_free(mi_result* result);

MI_API mi_status mi_panel_load(const char* directory, mi_panel** out);
/* Applies the cleaning filters (JSON object as in the "cleaning" config
 * section, may be NULL) and writes the rejection report as JSON. */
MI_API mi_status mi_panel_clean(const mi_panel* raw, const char* cleaning_json, mi_panel** out,
                                char** rejections_json);
MI_API size_t mi_panel_stock_count(const mi_panel* panel);
MI_API size_t mi_panel_day_count(const mi_panel* panel);
MI_API size_t mi_panel_order_count(const mi_panel* panel);
MI_API void mi_panel_free(mi_panel* panel);

/* (1+z)^(1-beta) - z^(1-beta) */
MI_API double mi_propagator_decay(double z, double beta);
MI_API mi_status mi_zeta_from_autocorr(double c1, double* zeta);

/* g(tau) = a tau^-gamma exp(-b tau) fitted to corr[0..n) at tau = 1..n.
 * `stderrs` may be NULL. gamma is held fixed unless free_gamma != 0. */
MI_API mi_status mi_fit_autocorr(const double* corr, const double* stderrs, size_t n, int free_gamma,
                                 double gamma, double* a, double* b, double* gamma_out);

/* Modified-propagator fit to a kernel normalized at tau = 0. mode is
 * "one_param", "two_param" or "b_zero_free_beta"; errors may be NULL. */
MI_API mi_status mi_fit_kernel_asymptote(const double* normalized, const double* errors, size_t n, const char* mode,
                                         double b_fixed, double beta_fixed, double* i_inf, double* b,
                                         double* beta);

#ifdef __cplusplus
}
#endif

#endif
