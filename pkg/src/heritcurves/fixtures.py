"""Published parameter sets used as reference models.

``twin_bmi`` is the two-component MZ/DZ fit to female twin BMI at age 18,
``trio_birthweight`` the four-component fit to Norwegian mother-father-child
birth weights, and ``three_component_example`` the illustrative mixture used
to show tail behaviour of the correlation curve.
"""

from .mixture import BivariateMixture, TrioMixture, TwinJointModel


def twin_bmi() -> TwinJointModel:
    return TwinJointModel.from_arrays(
        p=[0.81, 0.19],
        mu=[21.20, 22.20],
        sigma=[0.63, 1.26],
        rho_mz=[0.75, 0.70],
        rho_dz=[0.28, -0.04],
    )


def trio_birthweight() -> TrioMixture:
    return TrioMixture.from_arrays(
        p=[0.636, 0.231, 0.126, 0.007],
        mu=[3516, 3687, 3093, 2243],
        sigma=[440.5, 572.9, 690.5, 1116],
        rho_mf=[-0.011, -0.084, -0.289, 0.750],
        rho_mc=[0.240, 0.143, -0.189, -0.826],
        rho_fc=[0.134, 0.053, -0.254, -0.845],
    )


def three_component_example() -> BivariateMixture:
    return BivariateMixture.from_arrays(
        p=[0.3, 0.3, 0.4],
        mu=[1.0, 2.0, 4.0],
        sigma=[2.0, 4.0, 6.0],
        rho=[0.7, 0.8, 0.6],
    )
