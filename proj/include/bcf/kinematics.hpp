#pragma once

// Serial 7-DoF arm kinematics on a modified (Craig) Denavit-Hartenberg chain.
//
// Frame i is reached from frame i-1 by
//   RotX(alpha_{i-1}) * TransX(a_{i-1}) * RotZ(theta_i + offset_i) * TransZ(d_i)
// and joint i rotates about z_i. The default model is the Franka Emika Panda
// (DH table as published in the Franka Control Interface documentation);
// the end effector is the flange, 0.107 m along z_7, with no gripper.

#include <array>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "bcf/errors.hpp"

namespace bcf {

constexpr int kArmDof = 7;

template <typename Scalar>
using Joint7 = Eigen::Matrix<Scalar, kArmDof, 1>;

template <typename Scalar>
using Jacobian6x7 = Eigen::Matrix<Scalar, 6, kArmDof>;

template <typename Scalar>
using Jacobian3x7 = Eigen::Matrix<Scalar, 3, kArmDof>;

template <typename Scalar = double>
struct DhRow {
    Scalar a;       // a_{i-1}, m
    Scalar d;       // d_i, m
    Scalar alpha;   // alpha_{i-1}, rad
    Scalar offset;  // added to the joint angle
};

template <typename Scalar = double>
struct ArmModel {
    std::array<DhRow<Scalar>, kArmDof> joints;
    DhRow<Scalar> flange;
    Joint7<Scalar> lower;
    Joint7<Scalar> upper;

    static ArmModel panda() {
        constexpr Scalar half_pi = Scalar(M_PI / 2);
        ArmModel m;
        m.joints = {{
            {Scalar(0), Scalar(0.333), Scalar(0), Scalar(0)},
            {Scalar(0), Scalar(0), -half_pi, Scalar(0)},
            {Scalar(0), Scalar(0.316), half_pi, Scalar(0)},
            {Scalar(0.0825), Scalar(0), half_pi, Scalar(0)},
            {Scalar(-0.0825), Scalar(0.384), -half_pi, Scalar(0)},
            {Scalar(0), Scalar(0), half_pi, Scalar(0)},
            {Scalar(0.088), Scalar(0), half_pi, Scalar(0)},
        }};
        m.flange = {Scalar(0), Scalar(0.107), Scalar(0), Scalar(0)};
        m.lower << Scalar(-2.8973), Scalar(-1.7628), Scalar(-2.8973), Scalar(-3.0718), Scalar(-2.8973),
            Scalar(-0.0175), Scalar(-2.8973);
        m.upper << Scalar(2.8973), Scalar(1.7628), Scalar(2.8973), Scalar(-0.0698), Scalar(2.8973),
            Scalar(3.7525), Scalar(2.8973);
        return m;
    }

    /// The documented "ready" configuration.
    static Joint7<Scalar> ready_pose() {
        Joint7<Scalar> q;
        q << Scalar(0), Scalar(-M_PI / 4), Scalar(0), Scalar(-3 * M_PI / 4), Scalar(0), Scalar(M_PI / 2),
            Scalar(M_PI / 4);
        return q;
    }

    bool within_limits(const Joint7<Scalar>& q) const {
        return (q.array() >= lower.array()).all() && (q.array() <= upper.array()).all();
    }

    Joint7<Scalar> clamp(const Joint7<Scalar>& q) const { return q.cwiseMax(lower).cwiseMin(upper); }
};

template <typename Scalar>
using Pose = Eigen::Transform<Scalar, 3, Eigen::Isometry>;

template <typename Scalar>
Pose<Scalar> dh_transform(const DhRow<Scalar>& row, Scalar theta) {
    Pose<Scalar> t = Pose<Scalar>::Identity();
    t.rotate(Eigen::AngleAxis<Scalar>(row.alpha, Eigen::Matrix<Scalar, 3, 1>::UnitX()));
    t.translate(Eigen::Matrix<Scalar, 3, 1>(row.a, Scalar(0), Scalar(0)));
    t.rotate(Eigen::AngleAxis<Scalar>(theta + row.offset, Eigen::Matrix<Scalar, 3, 1>::UnitZ()));
    t.translate(Eigen::Matrix<Scalar, 3, 1>(Scalar(0), Scalar(0), row.d));
    return t;
}

/// Base-frame poses of joint frames 1..7 followed by the flange (index 7).
template <typename Scalar>
std::array<Pose<Scalar>, kArmDof + 1> joint_frames(const ArmModel<Scalar>& model, const Joint7<Scalar>& q) {
    std::array<Pose<Scalar>, kArmDof + 1> frames;
    Pose<Scalar> t = Pose<Scalar>::Identity();
    for (int i = 0; i < kArmDof; ++i) {
        t = t * dh_transform(model.joints[static_cast<size_t>(i)], q[i]);
        frames[static_cast<size_t>(i)] = t;
    }
    frames[kArmDof] = t * dh_transform(model.flange, Scalar(0));
    return frames;
}

template <typename Scalar>
Pose<Scalar> forward_kinematics(const ArmModel<Scalar>& model, const Joint7<Scalar>& q) {
    return joint_frames(model, q)[kArmDof];
}

/// Geometric Jacobian in the base frame; rows are (linear; angular) velocity.
template <typename Scalar>
Jacobian6x7<Scalar> jacobian(const ArmModel<Scalar>& model, const Joint7<Scalar>& q) {
    const auto frames = joint_frames(model, q);
    const Eigen::Matrix<Scalar, 3, 1> p_e = frames[kArmDof].translation();
    Jacobian6x7<Scalar> j;
    for (int i = 0; i < kArmDof; ++i) {
        const auto& f = frames[static_cast<size_t>(i)];
        const Eigen::Matrix<Scalar, 3, 1> z = f.linear().col(2);
        j.template block<3, 1>(0, i) = z.cross(p_e - f.translation());
        j.template block<3, 1>(3, i) = z;
    }
    return j;
}

enum class ManipulabilityJacobian { Full6x7, Translational3x7 };

inline const char* to_string(ManipulabilityJacobian which) {
    return which == ManipulabilityJacobian::Full6x7 ? "6x7" : "3x7";
}

/// sqrt(det(J J^T)) via the Cholesky factor of J J^T, falling back to the
/// product of singular values when the factorisation fails.
template <typename Scalar, int Rows>
Scalar yoshikawa_index(const Eigen::Matrix<Scalar, Rows, kArmDof>& j) {
    const Eigen::Matrix<Scalar, Rows, Rows> jjt = j * j.transpose();
    Eigen::LLT<Eigen::Matrix<Scalar, Rows, Rows>> llt(jjt);
    if (llt.info() == Eigen::Success) {
        const auto diag = llt.matrixLLT().diagonal();
        if ((diag.array() > Scalar(0)).all()) return diag.prod();
    }
    Eigen::JacobiSVD<Eigen::Matrix<Scalar, Rows, kArmDof>> svd(j);
    return svd.singularValues().prod();
}

template <typename Scalar>
Scalar manipulability(const ArmModel<Scalar>& model, const Joint7<Scalar>& q,
                      ManipulabilityJacobian which = ManipulabilityJacobian::Full6x7) {
    const Jacobian6x7<Scalar> j = jacobian(model, q);
    if (which == ManipulabilityJacobian::Full6x7) return yoshikawa_index<Scalar, 6>(j);
    const Jacobian3x7<Scalar> jv = j.template topRows<3>();
    return yoshikawa_index<Scalar, 3>(jv);
}

/// J^T (J J^T + mu^2 I)^{-1}. With mu == 0 and full row rank this is the
/// Moore-Penrose pseudoinverse.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Derived::ColsAtCompileTime, Derived::RowsAtCompileTime>
damped_pseudoinverse(const Eigen::MatrixBase<Derived>& j, typename Derived::Scalar mu) {
    using Scalar = typename Derived::Scalar;
    constexpr int R = Derived::RowsAtCompileTime;
    BCF_REQUIRE(mu >= Scalar(0) && std::isfinite(mu), "damped_pseudoinverse: damping must be finite and >= 0");
    Eigen::Matrix<Scalar, R, R> gram = j * j.transpose();
    gram.diagonal().array() += mu * mu;
    if (mu == Scalar(0)) {
        Eigen::FullPivLU<Eigen::Matrix<Scalar, R, R>> lu(gram);
        if (!lu.isInvertible()) throw SingularityError("damped_pseudoinverse: J J^T is singular and no damping was given");
        return j.transpose() * lu.inverse();
    }
    Eigen::LDLT<Eigen::Matrix<Scalar, R, R>> ldlt(gram);
    return (ldlt.solve(j.derived()).transpose()).eval();
}

}  // namespace bcf
