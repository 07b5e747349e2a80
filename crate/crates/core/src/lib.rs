pub mod mathcore;
pub mod nn;
pub mod ddpg;
pub mod envs;
pub mod explore;
pub mod pipeline;
