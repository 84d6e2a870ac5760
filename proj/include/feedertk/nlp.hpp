#ifndef FEEDERTK_NLP_HPP
#define FEEDERTK_NLP_HPP

#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace feedertk::nlp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Sparse nonlinear program
///     min f(x)  s.t.  cl <= c(x) <= cu,  xl <= x <= xu
/// with fixed Jacobian and Hessian sparsity. Equality rows are expressed as
/// cl == cu. Structure callbacks are queried once; value callbacks must fill
/// the same pattern every time.
class Problem {
public:
    virtual ~Problem() = default;

    virtual int num_vars() const = 0;
    virtual int num_cons() const = 0;

    virtual void bounds(Eigen::VectorXd& xl, Eigen::VectorXd& xu, Eigen::VectorXd& cl,
                        Eigen::VectorXd& cu) const = 0;
    virtual void initial_point(Eigen::VectorXd& x) const = 0;

    virtual double objective(const Eigen::VectorXd& x) const = 0;
    virtual void gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const = 0;
    virtual void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& c) const = 0;

    virtual void jacobian_structure(std::vector<int>& rows, std::vector<int>& cols) const = 0;
    virtual void jacobian_values(const Eigen::VectorXd& x, Eigen::VectorXd& vals) const = 0;

    /// Lower triangle (row >= col) of sigma*H_f + sum_i lambda_i * H_{c_i}.
    virtual void hessian_structure(std::vector<int>& rows, std::vector<int>& cols) const = 0;
    virtual void hessian_values(const Eigen::VectorXd& x, double sigma,
                                const Eigen::VectorXd& lambda, Eigen::VectorXd& vals) const = 0;
};

enum class SolveStatus {
    Optimal,
    IterationLimit,
    LineSearchFailure,
    LinearSolverFailure,
};

const char* status_name(SolveStatus s);

struct SolveOptions {
    double tol = 1e-8;       // scaled KKT error
    double con_tol = 1e-8;   // unscaled constraint violation, infinity norm
    int max_iter = 200;
    double mu_init = 0.1;
    bool verbose = false;
};

struct SolveResult {
    Eigen::VectorXd x;
    Eigen::VectorXd lambda;   // constraint multipliers
    Eigen::VectorXd zl, zu;   // bound multipliers of the x variables
    double objective = 0.0;
    double kkt_error = 0.0;       // scaled, at the returned point
    double con_violation = 0.0;   // infinity norm of bound-clipped c(x)
    int iterations = 0;
    SolveStatus status = SolveStatus::IterationLimit;
    std::string message;
};

/// Optional starting point and multipliers from a previous, similar solve.
struct WarmStart {
    Eigen::VectorXd x;
    Eigen::VectorXd lambda;
    Eigen::VectorXd zl, zu;
};

/// Primal-dual interior-point method: slacked inequalities, log barrier with
/// a monotone decreasing mu, l1 exact-penalty line search, and inertia-free
/// primal regularization on factorization or descent failure.
SolveResult solve(Problem& p, const SolveOptions& opts = {}, const WarmStart* warm = nullptr);

}  // namespace feedertk::nlp

#endif
